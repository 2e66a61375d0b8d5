int task_entry()
{
    uint32_t x = 0xFFFFFFF0u;
    uint32_t y = x + 0x20u;
    uint32_t z = 3u - 5u;
    uint32_t big = 65536u * 65536u + 7u;
    rtos_printf("%u %u %u %x\n", y, z, big, x / 3u);
    return (int)(z % 1000u);
}
