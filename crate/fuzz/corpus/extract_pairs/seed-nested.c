/* outer /* inner is not nested */
int nested_ok = 1;
// line comment with /* block opener
int after_line = 2;
/* block with // inside */
int after_block = 3;
