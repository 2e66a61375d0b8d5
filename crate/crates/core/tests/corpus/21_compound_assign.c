int task_entry()
{
    int v = 100;
    v += 5; v -= 3; v *= 2; v /= 7; v %= 13;
    uint32_t u = 0x0Fu;
    u <<= 4; u |= 3u; u ^= 0x5Au; u &= 0xFEu; u >>= 1;
    double d = 1.0;
    d += 0.5; d *= 4.0; d -= 1.0; d /= 2.0;
    double arr[2] = {1.0, 2.0};
    arr[1] *= 3.0;
    rtos_printf("%d %u %.2f %.2f\n", v, u, d, arr[1]);
    return v + (int)u;
}
