int task_entry()
{
    int a[4] = {1, 2, 3, 4};
    int *p = a;
    int i = 0;
    int x = a[i++];
    int y = a[++i];
    *p++ += 10;
    (*p)--;
    int z = p[1]--;
    int w = --a[3];
    rtos_printf("%d %d %d %d | %d %d %d %d | i=%d\n", x, y, z, w, a[0], a[1], a[2], a[3], i);
    return a[0] + a[1] + a[2] + a[3];
}
