int task_entry()
{
    int a = 17, b = -5;
    rtos_printf("%d %d %d %d %d\n", a + b, a - b, a * b, a / b, a % b);
    rtos_printf("%d %d\n", -a / 4, -a % 4);
    return a * 3 - b;
}
