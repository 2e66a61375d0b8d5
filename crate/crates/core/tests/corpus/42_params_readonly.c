int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    rtos_printf("p0=%u\n", p[0]);
    p[0] = 5u;
    return 0;
}
