const uint32_t MAGIC = 0xC0FFEEu;

int task_entry()
{
    rtos_printf("[%s] [%5d] [%-5d] [%05u] [%x] [%8x]\n", "hello", 42, -7, 17u, MAGIC, 255u);
    rtos_printf("%%literal [%-8s] [%10.4f] [%.0f]\n", "ok", 12345.678, 0.5);
    return 0;
}
