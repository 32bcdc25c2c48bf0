//! The bundled Blog platform: a small product line with a dozen
//! components, every variation point kind and annotated artifacts in a
//! range of file types.

use std::fs;
use std::io;
use std::path::Path;

macro_rules! sample_files {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_bytes!(concat!("../sample/blog/", $path)))),*]
    };
}

/// Platform-relative path and contents of every sample file.
pub const FILES: &[(&str, &[u8])] = sample_files![
    "README.md",
    "assets/favicon.ico",
    "basemodel.json",
    "comment/editor/comment-editor.html",
    "comment/editor/comment-editor.js",
    "comment/viewer/comment-viewer.css",
    "comment/viewer/comment-viewer.html",
    "config/app.json",
    "config/application.yml",
    "delimiters.json",
    "editor/help/html-help.html",
    "editor/help/markdown-help.md",
    "editor/toolbar/rich-toolbar.css",
    "editor/toolbar/rich-toolbar.js",
    "editor/toolbar/toolbar.js",
    "features.json",
    "i18n/messages_en.properties",
    "i18n/messages_es.properties",
    "post/editor/post-editor.html",
    "post/editor/post-editor.js",
    "post/viewer/post-viewer.html",
    "post/viewer/post-viewer.scss",
    "scripts/deploy.sh",
    "server/comment/CommentREST.java",
    "server/comment/CommentResource.java",
    "server/post/PostREST.java",
    "server/tag/TagService.java",
    "server/upload/FileUploaderService.java",
    "upload/file-uploader.js",
    "variability.json",
    "widgets/tag-cloud.css",
    "widgets/tag-cloud.js",
];

/// Writes the sample platform under `dir`, creating it if needed.
pub fn write_sample(dir: &Path) -> io::Result<()> {
    for (path, bytes) in FILES {
        let target = dir.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, bytes)?;
        #[cfg(unix)]
        if path.ends_with(".sh") {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&target, fs::Permissions::from_mode(0o755))?;
        }
    }
    Ok(())
}

pub fn file(path: &str) -> Option<&'static [u8]> {
    FILES.iter().find(|(p, _)| *p == path).map(|(_, b)| *b)
}
