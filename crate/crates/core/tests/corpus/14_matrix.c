int task_entry()
{
    double a[9] = {1.0, 2.0, 3.0, 0.0, 1.0, 4.0, 5.0, 6.0, 0.0};
    double b[9] = {-24.0, 18.0, 5.0, 20.0, -15.0, -4.0, -5.0, 4.0, 1.0};
    double c[9];
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) {
            double s = 0.0;
            for (int k = 0; k < 3; k++)
                s += a[3 * i + k] * b[3 * k + j];
            c[3 * i + j] = s;
        }
    double tr = c[0] + c[4] + c[8];
    rtos_printf("trace=%.2f off=%.2f\n", tr, c[1] + c[5]);
    return (int)tr;
}
