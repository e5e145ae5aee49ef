public class BlockComment {
    void run(int a) {
        /* stupid but works */
        if (a % 2 == 0) {
            half(a);
        }
    }
}
