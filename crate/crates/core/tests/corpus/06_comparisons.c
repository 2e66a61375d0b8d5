int task_entry()
{
    int a = -1;
    uint32_t b = 1u;
    int r = 0;
    if (a < 0) r += 1;
    if ((uint32_t)a > b) r += 2;
    if (a <= -1 && b >= 1u) r += 4;
    if (1.5 > 1.25) r += 8;
    if (2.0 != 2.0) r += 16;
    if (a == -1 || r > 100) r += 32;
    rtos_printf("r=%d\n", r);
    return r;
}
