int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    int zero = (int)p[0] - 7;
    rtos_printf("before\n");
    int v = 10 / zero;
    rtos_printf("after %d\n", v);
    return v;
}
