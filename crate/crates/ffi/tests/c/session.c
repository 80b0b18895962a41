#include <math.h>
#include <stdio.h>
#include "tweezer_thermo.h"

#define CHECK(expr)                                                   \
    do {                                                              \
        if (!(expr)) {                                                \
            const char *msg = tt_last_error_message();                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #expr, msg ? msg : "no message");                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    TtConfig cfg;
    CHECK(tt_config_preset(TT_PRESET_DEEP, &cfg) == TT_STATUS_OK);

    TtSession *s = NULL;
    CHECK(tt_session_new(&cfg, &s) == TT_STATUS_OK);
    double t = 0.0;
    CHECK(tt_session_next_time_us(s, &t) == TT_STATUS_OK);
    CHECK(t == 22.0);

    int outcomes[] = {1, 2, 0, 1};
    for (int i = 0; i < 4; i++) {
        CHECK(tt_session_next_time_us(s, &t) == TT_STATUS_OK);
        CHECK(tt_session_submit(s, t, outcomes[i]) == TT_STATUS_OK);
    }
    CHECK(tt_session_submit(s, t, -3) == TT_STATUS_INVALID_OUTCOME);
    CHECK(tt_last_error_message() != NULL);

    double est = 0.0, delta = 0.0;
    size_t shots = 0;
    CHECK(tt_session_estimate(s, &est, &delta) == TT_STATUS_OK);
    CHECK(tt_session_shots(s, &shots) == TT_STATUS_OK);
    CHECK(shots == 4);
    CHECK(est > 14.5 && est < 125.0 && delta > 0.0);
    tt_session_free(s);

    double w = 0.0;
    CHECK(tt_lambert_w0(M_E, &w) == TT_STATUS_OK);
    CHECK(fabs(w - 1.0) < 1e-15);
    CHECK(tt_lambert_w0(0.0, NULL) == TT_STATUS_NULL_ARGUMENT);
    printf("%.12f %.12f\n", est, delta);
    return 0;
}
