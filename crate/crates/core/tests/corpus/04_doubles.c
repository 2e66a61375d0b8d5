int task_entry()
{
    double a = 1.5, b = -0.25;
    double c = a * b + a / 3.0 - b;
    rtos_printf("%.6f %.3f %f\n", c, -c, a - b);
    int truncated = (int)(c * 1000.0);
    return truncated;
}
