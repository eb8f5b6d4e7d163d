#include <stdio.h>
#include <string.h>
#include "elastoinv.h"

int main(void) {
    EiDataset *ds = NULL;
    EiModel *model = NULL;
    EiFields *fields = NULL;
    char msg[256];
    size_t ny = 0, nx = 0;
    double nu[64];

    if (ei_dataset_generate(8, 8, 1, 0.01, 1000.0, 5, &ds) != EI_STATUS_OK) return 1;
    if (ei_train(ds, "seed = 1\ndepth = 2\nwidth = 8\nomega = 8\ndesk_scale_factor = 0.001\n", &model) != EI_STATUS_OK) {
        ei_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 2;
    }
    if (ei_predict(model, ds, &fields) != EI_STATUS_OK) return 3;
    if (ei_fields_get(fields, "nu", nu, 64, &ny, &nx) != EI_STATUS_OK || ny != 8 || nx != 8) return 4;
    if (ei_train(ds, "seed = x", &model) != EI_STATUS_CONFIG) return 5;
    if (ei_last_error(msg, sizeof msg) == 0 || strlen(msg) == 0) return 6;
    printf("iterations %zu nu[0] %.4f\n", ei_model_iterations(model), nu[0]);
    ei_fields_free(fields);
    ei_model_free(model);
    ei_dataset_free(ds);
    return 0;
}
