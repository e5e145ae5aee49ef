public class OffColumn {
    void run(int a) {
          // ugly cast below
        if (a != 0) {
            cast(a);
        }
    }
}
