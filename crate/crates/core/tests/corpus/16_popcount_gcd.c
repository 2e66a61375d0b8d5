int popcount(uint32_t x)
{
    int n = 0;
    while (x) {
        x &= x - 1u;
        n++;
    }
    return n;
}

uint32_t gcd(uint32_t a, uint32_t b)
{
    while (b != 0u) {
        uint32_t t = a % b;
        a = b;
        b = t;
    }
    return a;
}

int task_entry()
{
    rtos_printf("%d %d %u %u\n", popcount(0xF0F0F0F0u), popcount(0u), gcd(1071u, 462u), gcd(17u, 5u));
    return popcount(0xDEADBEEFu);
}
