public class ExcludedComment {
    void run(int a) {
        // this should be refactored
        if (a == 5) {
            shim(a);
        }
    }
}
