#include <iostream>
int main() { std::cout << "parlab (placeholder)\n"; return 0; }
