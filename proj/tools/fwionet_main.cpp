#include <cstdio>

int main() {
    std::puts("fwionet: CLI under construction");
    return 0;
}
