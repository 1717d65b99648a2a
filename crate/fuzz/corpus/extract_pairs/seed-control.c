int run(int x) {
    /* bail out early */
    if (x < 0) {
        return -1;
    }
    // loop until done
    while (x > 0) x--;
    return x;
}
