int task_entry()
{
    rtos_EnterCriticalSection();
    rtos_EnterCriticalSection();
    reg_write(0x2000, 1234u);
    rtos_ExitCriticalSection();
    uint32_t v = reg_read(0x2000);
    rtos_ExitCriticalSection();
    rtos_printf("v=%u\n", v);
    return (int)v;
}
