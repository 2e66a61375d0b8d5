int task_entry()
{
    iq_pair *box = rtos_GetDataBox(4 * sizeof(iq_pair));
    iq_pair local;
    for (uint32_t i = 0; i < 4u; i++)
        recmodule_get_iq_pair(0, box + i);
    recmodule_get_iq_pair(1, &local);
    int s = 0;
    for (uint32_t i = 0; i < 4u; i++)
        s += box[i].i / 1000 + box[i].q;
    box[3].q = local.i + local.q;
    rtos_FinishDataBox(box);
    rtos_printf("s=%d local=(%d,%d)\n", s, local.i, local.q);
    return s;
}
