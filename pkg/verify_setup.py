import sys
import os

# Add current directory to path
sys.path.append(os.getcwd())

EXPECTED = ["simulate-field", "estimate", "eta", "check-condition", "clt-study", "bias-study", "denoise"]

try:
    from lattice_kreg.main import SUBCOMMANDS, build_parser
    print("SUCCESS: lattice_kreg.main imported")

    build_parser()
    print(f"Subcommands found: {len(SUBCOMMANDS)}")

    for name in EXPECTED:
        if name in SUBCOMMANDS:
            print(f"SUCCESS: {name} registered")
        else:
            print(f"FAILURE: {name} NOT registered")

except Exception as e:
    print(f"FAILURE: {e}")
    import traceback
    traceback.print_exc()
