def get_error_message(error_code):
    """
    Returns the human-readable message for a given error code.
    Args:
        error_code (str): The error code to look up
    Returns:
        str: The corresponding message or a default message if not found
    """
    if error_code == "N/A":
        return error_code
    return error_translations.get(error_code, "Unknown error *")


# Tensor core
SHAPE_MISMATCH = "E101"
DTYPE_MIXING = "E102"
NON_SCALAR_LOSS = "E103"
TAPE_CONFLICT = "E104"
UNKNOWN_PRIMITIVE = "E105"
DIMENSION_MISMATCH = "E106"
TENSOR_FORMAT = "E107"
DUPLICATE_PARAMETER = "E108"
TAPE_RELEASED = "E109"

# Scan / model
NON_POSITIVE_STEP = "E111"
SEQUENCE_LENGTH_MISMATCH = "E112"
EMPTY_FEATURE_MAP = "E113"

# Data
MANIFEST_EMPTY = "E201"
MANIFEST_FIELD_MISSING = "E202"
MANIFEST_LINE_INVALID = "E203"
MANIFEST_FILE_MISSING = "E204"
IMAGE_FORMAT = "E211"
IMAGE_CHANNELS = "E212"

# Training / checkpoints
INVALID_TRAIN_CONFIG = "E301"
NON_FINITE_LOSS = "E302"
CHECKPOINT_MAGIC = "E311"
CHECKPOINT_TRUNCATED = "E312"
CHECKPOINT_MISMATCH = "E313"
MISSING_EOS = "E321"
WRONG_IMAGE_SIZE = "E322"
EMPTY_BATCH = "E323"

# Evaluation
TEMPLATE_PLACEHOLDER = "E401"
LABEL_OUT_OF_RANGE = "E402"
MISSING_LABEL_NAME = "E403"
TABLE_CELL_MISSING = "E404"
EMPTY_CLASS_LIST = "E405"

# OOD suite
UNKNOWN_PERTURBATION = "E501"
LEVEL_OUT_OF_LADDER = "E502"
MISSING_SEED = "E503"
MISSING_CATEGORY16 = "E504"
IMAGE_TOO_SMALL = "E505"
OUTPUT_INSIDE_INPUT = "E506"

# Hessian spectra
INVALID_LANCZOS_CONFIG = "E601"
BATCH_LARGER_THAN_MANIFEST = "E602"
EMPTY_REPORT = "E603"

# Configuration
UNKNOWN_CONFIG_KEY = "E701"
MISSING_CONFIG_KEY = "E702"
INVALID_CONFIG_VALUE = "E703"
UNKNOWN_PROFILE = "E704"
UNKNOWN = "E999"

# Translation mapping
error_translations = {
    SHAPE_MISMATCH: "Tensor shapes are incompatible",
    DTYPE_MIXING: "Tensors of different dtypes cannot be combined",
    NON_SCALAR_LOSS: "Gradients can only be taken of a scalar",
    TAPE_CONFLICT: "Inputs belong to different gradient tapes",
    UNKNOWN_PRIMITIVE: "Unknown primitive",
    DIMENSION_MISMATCH: "Vector length does not match the parameter count",
    TENSOR_FORMAT: "Malformed TEN1 tensor file",
    DUPLICATE_PARAMETER: "Parameter name is already taken",
    TAPE_RELEASED: "Gradient tape was released after its gradients were taken",
    NON_POSITIVE_STEP: "Step size must be strictly positive",
    SEQUENCE_LENGTH_MISMATCH: "Per-step sequence tensors disagree in length",
    EMPTY_FEATURE_MAP: "Feature map must have at least one row and column",
    MANIFEST_EMPTY: "Manifest holds no records",
    MANIFEST_FIELD_MISSING: "Manifest record is missing a mandatory field",
    MANIFEST_LINE_INVALID: "Manifest line is not a valid record",
    MANIFEST_FILE_MISSING: "Manifest references a missing file",
    IMAGE_FORMAT: "Unsupported image format",
    IMAGE_CHANNELS: "Image must have exactly three channels",
    INVALID_TRAIN_CONFIG: "Invalid training configuration",
    NON_FINITE_LOSS: "Loss became non-finite",
    CHECKPOINT_MAGIC: "Checkpoint magic or version mismatch",
    CHECKPOINT_TRUNCATED: "Checkpoint file is truncated",
    CHECKPOINT_MISMATCH: "Checkpoint does not match the configured model",
    MISSING_EOS: "Token sequence has no end-of-sequence token",
    WRONG_IMAGE_SIZE: "Image size does not match the model input size",
    EMPTY_BATCH: "Batch must hold at least one example",
    TEMPLATE_PLACEHOLDER: "Prompt template must contain '{}' exactly once",
    LABEL_OUT_OF_RANGE: "Label index outside the class list",
    MISSING_LABEL_NAME: "A label index has no label name",
    TABLE_CELL_MISSING: "Accuracy grid has a missing cell",
    EMPTY_CLASS_LIST: "Class list is empty",
    UNKNOWN_PERTURBATION: "Unknown perturbation kind",
    LEVEL_OUT_OF_LADDER: "Perturbation level outside the kind's ladder",
    MISSING_SEED: "Stochastic perturbation requires a seed",
    MISSING_CATEGORY16: "Record has no 16-category name",
    IMAGE_TOO_SMALL: "Frequency-domain perturbations need images of at least 2x2",
    OUTPUT_INSIDE_INPUT: "Perturbed images cannot be written inside the input tree",
    INVALID_LANCZOS_CONFIG: "Invalid Lanczos configuration",
    BATCH_LARGER_THAN_MANIFEST: "Batch size exceeds the manifest size",
    EMPTY_REPORT: "Spectrum report is empty",
    UNKNOWN_CONFIG_KEY: "Unknown configuration key",
    MISSING_CONFIG_KEY: "Missing configuration key",
    INVALID_CONFIG_VALUE: "Invalid configuration value",
    UNKNOWN_PROFILE: "Unknown run profile",
    UNKNOWN: "Unknown error",
}
