package blog.post;

import java.util.List;
// spl:if Logger
import java.util.logging.Logger;
// spl:endif

public class PostREST {
    // spl:if Logger
    private static final Logger LOG = Logger.getLogger(PostREST.class.getName());
    // spl:endif

    private final PostStore store;

    public PostREST(PostStore store) {
        this.store = store;
    }

    public Post get(long id) {
        // spl:if Logger
        LOG.fine("get post " + id);
        // spl:endif
        return store.find(id);
    }

    public List<Post> list(/* spl:if Tags */String tag/* spl:endif */) {
        // spl:if Tags
        if (tag != null) {
            return store.findByTag(tag);
        }
        // spl:endif
        return store.all();
    }
}
