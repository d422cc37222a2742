import sys

from src.general_utils import load_checkpoint, save_checkpoint, save_text_checkpoint


def convert_checkpoint(src_file: str, dst_file: str, to_text: bool = True):
    """
    Converts a checkpoint between the safetensors and the line-oriented text format.

    Args:
        src_file (str): checkpoint in either format.
        dst_file (str): where to write the converted checkpoint.
        to_text (bool): write the text format when True, safetensors otherwise.
    """
    checkpoint = load_checkpoint(src_file)
    if to_text:
        save_text_checkpoint(dst_file, checkpoint.policy, checkpoint.critic, checkpoint.metadata)
    else:
        save_checkpoint(dst_file, checkpoint.policy, checkpoint.critic, checkpoint.metadata)
    print(f"Converted {src_file} to {dst_file}")


if __name__ == "__main__":
    if len(sys.argv) not in (3, 4) or (len(sys.argv) == 4 and sys.argv[3] != "--binary"):
        print("usage: ckpt_to_text.py SRC DST [--binary]", file=sys.stderr)
        sys.exit(1)
    convert_checkpoint(sys.argv[1], sys.argv[2], to_text=len(sys.argv) == 3)
