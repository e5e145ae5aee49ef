public class DoubleComment {
    void run(int a) {
        // first note
        // second note
        if (a > 1) {
            act(a);
        }
    }
}
