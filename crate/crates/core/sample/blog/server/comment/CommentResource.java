package blog.comment;

import java.util.ArrayList;
import java.util.List;

public class CommentResource {
    private final List<Comment> items = new ArrayList<>();

    public Comment add(long postId, Comment c) {
        items.add(c.onPost(postId));
        return c;
    }

    public List<Comment> forPost(long postId) {
        return items.stream().filter(c -> c.postId() == postId).toList();
    }
}
