int task_entry()
{
    double samples[6] = {1.0, -2.0, 3.5, 0.25, -1.5, 2.0};
    double *end = samples + 6;
    double best = samples[0];
    for (double *p = samples; p < end; p++)
        if (*p > best)
            best = *p;
    double *mid = &samples[3];
    rtos_printf("best=%.2f idx=%d\n", best, (int)(mid - samples));
    return (int)(best * 4.0);
}
