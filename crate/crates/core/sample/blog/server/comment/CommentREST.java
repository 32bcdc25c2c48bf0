package blog.comment;

// spl:if Logger
import java.util.logging.Logger;
// spl:endif

public class CommentREST {
    // spl:if Logger
    private static final Logger LOG = Logger.getLogger(CommentREST.class.getName());
    // spl:endif

    private final CommentResource comments;

    public CommentREST(CommentResource comments) {
        this.comments = comments;
    }

    public Comment post(long postId, Comment c, User author) {
        // spl:if AnonymousUsers
        if (author == null) {
            author = User.anonymous(c.nickname());
            // spl:if Logger
            LOG.info("anonymous comment on post " + postId);
            // spl:endif
        }
        // spl:else
        if (author == null) {
            throw new UnauthorizedException();
        }
        // spl:endif
        return comments.add(postId, c.withAuthor(author));
    }
}
