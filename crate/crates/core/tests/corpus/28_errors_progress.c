int task_entry()
{
    for (uint32_t i = 0; i < 3u; i++)
        rtos_SetProgress(i * 10u);
    rtos_ReportError("plain error");
    rtos_PrintfError("value %d of %u (%.2f)", -3, 9u, 0.125);
    return -4;
}
