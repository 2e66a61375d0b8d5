int down(int n)
{
    int pad[16];
    pad[0] = n;
    return down(n + 1) + pad[0];
}

int task_entry()
{
    return down(0);
}
