int task_entry()
{
    uint32_t composite[200];
    uint32_t n = 0;
    for (uint32_t i = 2; i < 200; i++) {
        if (composite[i]) continue;
        n++;
        for (uint32_t j = i * i; j < 200; j += i)
            composite[j] = 1;
    }
    rtos_printf("primes below 200: %u\n", n);
    return (int)n;
}
