// Compute the checksum of a buffer.
// Uses a simple additive scheme,
// which wraps on overflow.
unsigned checksum(const unsigned char *p, int n) {
    unsigned sum = 0;
    for (int i = 0; i < n; i++)
        sum += p[i];
    return sum;
}

// first run

// second run after a blank line
int separated = 2;
