"""pytest wiring: parse absl flags so tf.test.TestCase helpers work, MIT License"""


from absl import flags


def pytest_configure(config):
    if not flags.FLAGS.is_parsed():
        flags.FLAGS.mark_as_parsed()
