"""Validates every *.json report in the given directories against the schema."""
import json
import pathlib
import sys

import jsonschema


def main():
    schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    checked = 0
    failures = 0
    for directory in sys.argv[2:]:
        for path in sorted(pathlib.Path(directory).glob("**/*.json")):
            doc = json.loads(path.read_text())
            errors = list(validator.iter_errors(doc))
            for error in errors:
                print(f"{path}: {error.json_path}: {error.message}")
            failures += bool(errors)
            checked += 1
    # A corrupted copy must be rejected, or the schema checks nothing.
    probe = json.loads(next(pathlib.Path(sys.argv[2]).glob("*.json")).read_text())
    probe["percentile"] = 100
    if validator.is_valid(probe):
        print("schema accepted percentile 100")
        failures += 1
    print(f"validated {checked} reports, {failures} failures")
    return 1 if failures or checked == 0 else 0


if __name__ == "__main__":
    sys.exit(main())
