#include <math.h>
#include <stdio.h>
#include "wavg.h"

int main(void) {
    WavgScheme *s = NULL;
    WavgSequence *x = NULL;
    double re = 0.0, im = 0.0;
    if (wavg_scheme_builtin("log", &s) != WAVG_STATUS_OK) return 1;
    if (wavg_sequence_named("constant:2", 0, 0, &x) != WAVG_STATUS_OK) return 2;
    if (wavg_weighted_avg(s, x, 5000, &re, &im) != WAVG_STATUS_OK) return 3;
    if (fabs(re - 2.0) > 1e-12) return 4;
    if (wavg_scheme_builtin("bogus", &s) != WAVG_STATUS_UNKNOWN_NAME) return 5;
    printf("%s\n", wavg_last_error());
    wavg_sequence_free(x);
    wavg_scheme_free(s);
    return 0;
}
