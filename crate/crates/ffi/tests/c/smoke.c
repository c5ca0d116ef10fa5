#include <stdio.h>
#include <string.h>
#include "renorm_perc.h"

#define CHECK(x) do { if (!(x)) { fprintf(stderr, "failed: %s (%s)\n", #x, rp_last_error()); return 1; } } while (0)

int main(void) {
    uint64_t gamma[] = {3000, 3001, 3002};
    RpEnvironment *env = NULL;
    CHECK(rp_environment_from_gamma(0.0, 12, 4000, 0, gamma, 3, &env) == RP_STATUS_OK);

    RpHierarchy *h = NULL;
    CHECK(rp_hierarchy_build(env, 2, &h) == RP_STATUS_OK);
    size_t violations = 1;
    CHECK(rp_hierarchy_verify(h, &violations) == RP_STATUS_OK && violations == 0);

    RpLayers *layers = NULL;
    CHECK(rp_layers_build(env, h, &layers) == RP_STATUS_OK);
    CHECK(rp_layers_verify(layers, h, &violations) == RP_STATUS_OK && violations == 0);

    uint32_t n = 0;
    CHECK(rp_choose_n(0.9, &n) == RP_STATUS_OK && n == 28);
    double f = 0;
    CHECK(rp_cramer_f(1.0, &f) == RP_STATUS_DOMAIN);
    CHECK(strlen(rp_last_error()) > 0);

    char *json = NULL;
    CHECK(rp_environment_to_json(env, &json) == RP_STATUS_OK && strstr(json, "3001") != NULL);
    rp_string_free(json);

    rp_layers_free(layers);
    rp_hierarchy_free(h);
    rp_environment_free(env);
    printf("ok %s\n", rp_version());
    return 0;
}
