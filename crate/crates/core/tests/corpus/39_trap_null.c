int task_entry()
{
    uint32_t *huge = rtos_GetDataBox(0xFFFFFFF0u);
    if (huge == NULL)
        rtos_printf("null box\n");
    return (int)huge[0];
}
