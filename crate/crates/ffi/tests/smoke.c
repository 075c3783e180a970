#include <math.h>
#include <stdio.h>
#include <string.h>

#include "slowinst.h"

int main(void) {
    SiModel *m = NULL;
    if (si_model_new(0.5, 2.7, 1.0, 1e-2, &m) != SI_STATUS_OK) return 1;

    double xi0 = 0.0, r = 0.0, g = 0.0;
    if (si_select_xi0(m, &xi0, &r) != SI_STATUS_OK) return 2;
    if (si_gamma1(m, xi0, &g) != SI_STATUS_OK) return 3;
    if (fabs(xi0 - 2.18108) > 1e-5 || fabs(g - 0.294936) > 1e-5) return 4;

    char *json = NULL;
    if (si_analyze_json(m, &json) != SI_STATUS_OK) return 5;
    int ok = strstr(json, "\"matches_closed_form\":true") != NULL;
    si_string_free(json);
    si_model_free(m);
    if (!ok) return 6;

    SiModel *bad = NULL;
    if (si_model_new(0.5, 2.0, 1.0, 1e-2, &bad) != SI_STATUS_INVALID_PARAMETER) return 7;
    if (si_last_error_message() == NULL) return 8;
    printf("xi0 %.6f gamma1 %.6f\n", xi0, g);
    return 0;
}
