package blog.tag;

import java.util.Map;
import java.util.TreeMap;

public class TagService {
    private final Map<String, Integer> counts = new TreeMap<>();

    public void tag(String name) {
        counts.merge(name, 1, Integer::sum);
    }

    public Map<String, Integer> counts() {
        return counts;
    }
}
