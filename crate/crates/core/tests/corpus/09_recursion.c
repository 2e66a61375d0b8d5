int fib(int n)
{
    if (n < 2)
        return n;
    return fib(n - 1) + fib(n - 2);
}

uint32_t fact(uint32_t n)
{
    return n <= 1u ? 1u : n * fact(n - 1u);
}

int task_entry()
{
    rtos_printf("fib=%d fact=%u\n", fib(15), fact(12u));
    return fib(10);
}
