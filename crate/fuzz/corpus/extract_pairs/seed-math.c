// Returns the larger value.
static int max_of(int a, int b)
{
    return a > b ? a : b;
}

/* Declaration only, so no body is attached */
int min_of(int a, int b);
