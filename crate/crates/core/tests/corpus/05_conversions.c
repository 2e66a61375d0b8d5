int task_entry()
{
    int neg = -7;
    uint32_t u = 4000000000u;
    double d = neg;
    double e = u;
    int back = (int)(-3.99);
    uint32_t ub = (uint32_t)(3.99e9);
    rtos_printf("%.1f %.1f %d %u\n", d, e, back, ub);
    double mix = neg + u;
    rtos_printf("%.1f\n", mix);
    return back;
}
