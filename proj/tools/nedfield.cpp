#include <nedfield/cli.hpp>

int main(int argc, char** argv)
{
  return nedfield::cli::dispatch(argc, argv);
}
