void swap(int *a, int *b)
{
    int t = *a;
    *a = *b;
    *b = t;
}

int task_entry()
{
    int x = 3, y = 11;
    swap(&x, &y);
    int arr[5] = {10, 20, 30, 40, 50};
    int *p = arr;
    int *q = &arr[4];
    p += 1;
    int d = q - p;
    int lt = p < q;
    int eq = (p + 3) == q;
    rtos_printf("%d %d %d %d %d %d\n", x, y, *p, d, lt, eq);
    return x * 10 + y + d;
}
