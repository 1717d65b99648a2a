/* set the counter */
int counter = 0;
/* cap the buffer */
#define BUF_CAP 64
/* default name */
static const char *name = "x";
