#include <stdio.h>

char *s = "/* not a comment */";
const char *t = "// also not a comment";
char q = '"';
char slash = '/';

/* real comment after decoys */
int after_decoys = 1;
const char *u = "escaped \" quote /* still string */";
