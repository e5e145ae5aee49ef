public class NoBrace {
    void run(int a) {
        // yuck special casing

        if (a == 9) mark(a); else if (a == 8) spark(a); else dull(a);
    }
}
