package blog.upload;

public class FileUploaderService {
    static final int MAX_UPLOAD_MB = /* spl:val maxUploadMb */;

    public boolean accepts(long sizeBytes) {
        return sizeBytes <= MAX_UPLOAD_MB * 1024L * 1024L;
    }
}
