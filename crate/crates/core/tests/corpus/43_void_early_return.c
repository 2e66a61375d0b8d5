void fill(uint32_t *v, uint32_t n, uint32_t stop)
{
    for (uint32_t i = 0; i < n; i++) {
        if (i == stop)
            return;
        v[i] = 100u + i;
    }
}

int task_entry()
{
    uint32_t v[6];
    fill(v, 6u, 4u);
    rtos_printf("%u %u %u\n", v[3], v[4], v[5]);
    return (int)(v[0] + v[3]);
}
