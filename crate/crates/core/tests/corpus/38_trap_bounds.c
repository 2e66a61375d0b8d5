int task_entry()
{
    uint32_t *box = rtos_GetDataBox(8);
    box[0] = 1u;
    box[1] = 2u;
    rtos_printf("ok\n");
    box[2] = 3u;
    return 0;
}
