void sort(int *v, int n)
{
    for (int i = 0; i < n; i++)
        for (int j = 0; j + 1 < n - i; j++)
            if (v[j] > v[j + 1]) {
                int t = v[j];
                v[j] = v[j + 1];
                v[j + 1] = t;
            }
}

int task_entry()
{
    int v[10] = {9, -2, 7, 7, 0, 13, -8, 4, 1, 3};
    sort(v, 10);
    for (int i = 0; i < 10; i++)
        rtos_printf("%d ", v[i]);
    rtos_printf("\n");
    return v[0] * 100 + v[9];
}
