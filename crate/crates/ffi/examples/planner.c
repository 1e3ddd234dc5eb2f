/* Build: cargo build -p gomore-ffi --release
 *        cc planner.c -I../include ../../../target/release/libgomore_ffi.a -lpthread -ldl -lm
 */
#include <stdio.h>

#include "gomore_ffi.h"

int main(void) {
    double lambdas[4] = {0.02, 0.05, 0.1, 0.2};
    double curve[4];
    size_t best_n = 0;
    if (gomore_optimize_participation(lambdas, 4, 0.8, curve, &best_n) != GOMORE_STATUS_OK) {
        fprintf(stderr, "planner: %s\n", gomore_last_error());
        return 1;
    }
    for (size_t n = 1; n <= 4; n++) {
        printf("N=%zu objective=%.6f\n", n, curve[n - 1]);
    }
    printf("best_n=%zu\n", best_n);

    double p = 0.0;
    if (gomore_error_free_prob_rate(-1.0, 0.8, 2, &p) != GOMORE_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    printf("rejected: %s\n", gomore_last_error());
    return 0;
}
