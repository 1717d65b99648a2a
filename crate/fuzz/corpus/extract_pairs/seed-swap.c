#include <stdio.h>

/* Swap two values */
void swapValues(int *a, int *b) {
    int temp = *a;
    *a = *b;
    *b = temp;
}
