#include <math.h>
#include <stdio.h>
#include "railgnss.h"

int main(void) {
    double alpha[4] = {1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8};
    double beta[4] = {9.0112e4, 0.0, -1.9661e5, -6.5536e4};
    double iono = 0.0, tropo = 0.0;
    if (rg_klobuchar_delay(alpha, beta, 0.8, 0.1, 1.2, 0.4, 50000.0, 1575.42e6, &iono) != RG_STATUS_OK) return 1;
    if (rg_tropo_delay(0.4, 120.0, 0.5, &tropo) != RG_STATUS_OK) return 2;
    RgClassifier *clf = NULL;
    if (rg_classifier_load("/nonexistent.json", &clf) != RG_STATUS_INPUT_ERROR || clf != NULL) return 3;
    char msg[128];
    if (rg_last_error_message(msg, sizeof msg) == 0) return 4;
    printf("%s %.6f %.6f\n", rg_version(), iono, tropo);
    return 0;
}
