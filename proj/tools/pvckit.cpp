#include <cstdio>
int main(){ std::puts("pvckit placeholder"); return 0; }
