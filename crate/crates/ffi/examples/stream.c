/* Stream a model over stdin-free synthetic frames and print the deepest
 * output. Build: cc stream.c -I../include -L<target>/debug -ldeepshift_ffi -lm -lpthread -ldl */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "deepshift.h"

static const char *MODEL =
    "{\"format\":\"deepshift-model\",\"layers\":[{\"w\":2,\"c_in\":1,\"c_out\":1,"
    "\"activation\":\"identity\",\"weights\":[[[1.0]],[[1.0]]],\"bias\":[0.0]}]}";

int main(void) {
    DsNetwork *net = NULL;
    DsEngine *engine = NULL;
    if (ds_network_from_json(MODEL, &net) != DS_STATUS_OK) {
        fprintf(stderr, "model: %s\n", ds_last_error_message());
        return 1;
    }
    if (ds_engine_new(net, 4, &engine) != DS_STATUS_OK) {
        fprintf(stderr, "engine: %s\n", ds_last_error_message());
        return 1;
    }
    ds_network_free(net);
    for (int t = 0; t < 5; t++) {
        double x = (double)t, y = 0.0;
        bool produced = false;
        if (ds_engine_push(engine, &x, 1, &y, 1, &produced) != DS_STATUS_OK) {
            fprintf(stderr, "push: %s\n", ds_last_error_message());
            return 1;
        }
        if (produced) {
            printf("%g\n", y);
        }
    }
    printf("ops %llu\n", (unsigned long long)ds_engine_ops_total(engine));
    ds_engine_free(engine);
    return 0;
}
