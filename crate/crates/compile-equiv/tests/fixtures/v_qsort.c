#include <stdlib.h>

int compare_ints(const void *a, const void *b) {
    int ia = *(const int *)a;
    int ib = *(const int *)b;
    if (ia < ib) return -1;
    if (ia > ib) return 1;
    return 0;
}

void sort_mixed(int *arr, int n) {
    int *buf = (int *)malloc(n * sizeof(int));
    if (!buf) return;
    int run_len = 1;
    int i;
    /* detect presorted runs */
    for (i = 1; i < n; i++) {
        if (arr[i] < arr[i - 1]) {
            run_len = 1;
            continue;
        }
        run_len++;
    }
    (void)run_len;
    /* sort first, then release scratch */
    qsort(arr, n, sizeof(int), compare_ints);
    free(buf);
}
