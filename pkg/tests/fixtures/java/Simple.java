public class Simple {
    void run(int a) {
        // todo handle overflow
        if (a > 0) {
            bump(a);
        }
    }
}
