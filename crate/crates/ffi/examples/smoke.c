/* Build: cargo build -p factive-ffi --release
 *        cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *           target/release/libfactive_ffi.a -lpthread -ldl -lm -o smoke
 */
#include <stdio.h>
#include "factive.h"

static const char *SCENARIO =
    "[design]\n"
    "n_eligible = 200\n"
    "n_broader = 100\n"
    "[model]\n"
    "noise_sd = 1.0\n"
    "[model.cell_means]\n"
    "eligible_rct = { experimental = 1.0, control = 0.0 }\n"
    "eligible_crw = { experimental = 0.6, control = 0.0 }\n"
    "broader_rct = { experimental = 0.9, control = 0.0 }\n"
    "broader_crw = { experimental = 0.4, control = 0.0 }\n";

int main(void) {
    FactiveScenario *scenario = NULL;
    FactiveDataset *data = NULL;
    char *json = NULL;

    if (factive_scenario_from_toml(SCENARIO, &scenario) != FACTIVE_STATUS_OK) {
        fprintf(stderr, "scenario: %s\n", factive_last_error_message());
        return 1;
    }
    if (factive_generate_dataset(scenario, 42, &data) != FACTIVE_STATUS_OK ||
        factive_estimate_json(data, scenario, &json) != FACTIVE_STATUS_OK) {
        fprintf(stderr, "estimate: %s\n", factive_last_error_message());
        return 2;
    }
    printf("%zu patients\n%s\n", factive_dataset_len(data), json);

    factive_string_free(json);
    factive_dataset_free(data);
    factive_scenario_free(scenario);
    return 0;
}
