int task_entry()
{
    int n = 0;
    int r = (n != 0) && (10 / n > 1);
    int s = (n == 0) || (10 / n > 1);
    int t = 0;
    int u = (t++ > 0) && (t++ > 0);
    int w = (t++ > 0) || (t++ > 0);
    rtos_printf("%d %d %d %d t=%d\n", r, s, u, w, t);
    return t;
}
