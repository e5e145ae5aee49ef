public class Intervening {
    void run(int a) {
        // hack note that belongs to the assignment
        int b = a + 1;
        if (b > 4) {
            use(b);
        }
    }
}
