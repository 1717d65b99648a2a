char open_a = '/', open_b = '*';
/* pick the separator */
char sep = '\'';
/* string spanning an escape */
const char *path = "C:\\dir\\"; /* windows path */
int done = 1;
