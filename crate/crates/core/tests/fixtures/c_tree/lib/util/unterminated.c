int before = 1;
/* this comment never closes
int after = 2;
