int limit = 10; // upper bound
int low = 0; /* lower bound */ int high = 9;

int total(int a, int b) {
    return a + b; // sum
}
