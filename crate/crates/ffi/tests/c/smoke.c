#include <math.h>
#include <stdio.h>
#include "dredit.h"

#define CHECK(expr)                                                        \
    do {                                                                   \
        enum DreditStatus s_ = (expr);                                     \
        if (s_ != DREDIT_STATUS_OK) {                                      \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_,              \
                    dredit_last_error_message());                          \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    enum { N = 8, D = 2 };
    float q[N * D], a[N * D];
    for (int i = 0; i < N; i++) {
        a[2 * i] = (float)(i + 1);
        a[2 * i + 1] = (float)(i % 3) - 1.0f;
        q[2 * i] = a[2 * i + 1];
        q[2 * i + 1] = a[2 * i];
    }

    DreditMatrix *qm = NULL, *am = NULL, *out = NULL;
    DreditOperator *op = NULL;
    CHECK(dredit_matrix_new(N, D, q, NULL, &qm));
    CHECK(dredit_matrix_new(N, D, a, NULL, &am));
    CHECK(dredit_fit(qm, am, 1.0, DREDIT_RIDGE_AUTO, DREDIT_SIDE_Q, &op));

    struct DreditOperatorInfo info;
    CHECK(dredit_operator_info(op, &info));
    if (info.dim != D || info.n_pairs != N) return 2;

    /* apply is the row-major product x * W */
    double w[D * D];
    CHECK(dredit_operator_weights(op, w, D * D));
    CHECK(dredit_apply(op, qm, &out));
    const float *x = dredit_matrix_data(out);
    for (int r = 0; r < N; r++) {
        for (int c = 0; c < D; c++) {
            double expect = 0.0;
            for (int k = 0; k < D; k++) expect += (double)q[r * D + k] * w[k * D + c];
            if (fabs((double)x[r * D + c] - expect) > 1e-4) {
                fprintf(stderr, "entry (%d,%d): %f vs %f\n", r, c, x[r * D + c], expect);
                return 3;
            }
        }
    }

    if (dredit_fit(qm, NULL, 1.0, 0.0, DREDIT_SIDE_Q, &op) != DREDIT_STATUS_INVALID_ARGUMENT) return 4;

    dredit_matrix_free(out);
    dredit_operator_free(op);
    dredit_matrix_free(qm);
    dredit_matrix_free(am);
    printf("ok %s\n", dredit_version());
    return 0;
}
