int task_entry()
{
    uint32_t best = 0u, arg = 0u;
    for (uint32_t start = 1u; start < 300u; start++) {
        uint32_t x = start, steps = 0u;
        while (x != 1u) {
            x = (x % 2u == 0u) ? x / 2u : 3u * x + 1u;
            steps++;
        }
        if (steps > best) {
            best = steps;
            arg = start;
        }
    }
    rtos_printf("%u steps from %u\n", best, arg);
    return (int)best;
}
