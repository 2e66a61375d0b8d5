int task_entry()
{
    double zero = 0.0;
    double inf = 1.0 / zero;
    double nan = zero / zero;
    int a = nan == nan;
    int b = nan != nan;
    int c = inf > 1e308;
    int d = (int)(-1e20);
    uint32_t e = (uint32_t)(-5.0);
    double nz = -zero;
    rtos_printf("%d %d %d %d %u %f\n", a, b, c, d, e, nz);
    return a + b * 2 + c * 4;
}
