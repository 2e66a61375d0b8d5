int task_entry()
{
    int a[8] = {5, 3, 9, 1};
    for (int i = 4; i < 8; i++)
        a[i] = a[i - 4] * 2;
    int sum = 0;
    for (int i = 0; i < 8; i++)
        sum += a[i];
    rtos_printf("%d %d %d\n", a[5], a[7], sum);
    return sum;
}
