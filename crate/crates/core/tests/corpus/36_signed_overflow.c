int task_entry()
{
    int m = 2147483647;
    int n = m + 1;
    int lo = -2147483647 - 1;
    int q = lo / -1;
    int r = lo % -1;
    int neg = -lo;
    rtos_printf("%d %d %d %d\n", n, q, r, neg);
    return r;
}
