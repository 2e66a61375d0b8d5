uint32_t crc32(uint32_t *words, uint32_t n)
{
    uint32_t crc = 0xFFFFFFFFu;
    for (uint32_t i = 0; i < n; i++) {
        uint32_t w = words[i];
        for (uint32_t b = 0; b < 4u; b++) {
            crc ^= (w >> (8u * b)) & 0xFFu;
            for (int k = 0; k < 8; k++)
                crc = (crc & 1u) ? (crc >> 1) ^ 0xEDB88320u : crc >> 1;
        }
    }
    return ~crc;
}

int task_entry()
{
    uint32_t data[4] = {0x64636261u, 0x68676665u, 0x6C6B6A69u, 0x706F6E6Du};
    uint32_t c = crc32(data, 4u);
    rtos_printf("crc=%08x\n", c);
    return (int)(c & 0x7FFFu);
}
