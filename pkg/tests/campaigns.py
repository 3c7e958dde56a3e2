def write_campaign(path, **keys) -> str:
    """ Writes a flat campaign file and returns its path """
    text = "\n".join(f"{key} = {value}" for key, value in keys.items()) + "\n"
    path.write_text(text)
    return str(path)
