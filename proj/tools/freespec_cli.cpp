#include <cstdio>

int main() {
    std::puts("freespec: placeholder");
    return 0;
}
