#include "dualscale.h"

int main(void) {
    double w[4] = {0.0, 3.0, 1.0, 0.0};
    DsWinMatrix *m = NULL;
    DsScale *s = NULL;
    double p = 0.0;
    if (ds_win_matrix_from_dense(2, w, &m) != DS_STATUS_OK) return 1;
    if (ds_fit_bt(m, 0.0, 1e-10, 100, &s) != DS_STATUS_OK) return 2;
    ds_scale_probability(s, 0, 1, &p);
    ds_scale_free(s);
    ds_win_matrix_free(m);
    return p > 0.74 && p < 0.76 ? 0 : 3;
}
