#
import sys

def is_prime(num):
    if num < 2:
        return False
    for i in range(2, int(num ** 0.5) + 1):
        if num % i == 0:
            return False
    return True

if __name__ == "__main__":
    num = int(sys.argv[1])
    if is_prime(num):
        print(f"{num} is prime!")
    else:
        print(f"{num} is not prime.")
#
