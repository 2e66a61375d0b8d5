int task_entry()
{
    int count = 0;
    for (int i = 0; i < 6; i++) {
        for (int j = 0; j < 6; j++) {
            if (j > i) break;
            if ((i + j) % 2 == 1) continue;
            count += i * j;
        }
    }
    rtos_printf("count=%d\n", count);
    return count;
}
