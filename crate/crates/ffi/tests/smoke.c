#include <stdio.h>
#include "voyagecast.h"

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke BUNDLE LINE\n");
        return 2;
    }
    VcBundle *bundle = NULL;
    if (vc_bundle_load(argv[1], &bundle) != VC_STATUS_OK) {
        char msg[256];
        vc_last_error(msg, sizeof msg);
        fprintf(stderr, "load: %s\n", msg);
        return 1;
    }
    char out[128];
    size_t n = 0;
    VcStatus s = vc_serve_line(bundle, argv[2], out, sizeof out, &n);
    if (s != VC_STATUS_OK) {
        fprintf(stderr, "serve_line failed with %d\n", (int)s);
        vc_bundle_free(bundle);
        return 1;
    }
    printf("%s\n", out);
    vc_bundle_free(bundle);
    return 0;
}
